void append_tag(const char *tag) {
    char *buf = calloc(8, 1);
    // tag length checked
    if (buf != NULL && strlen(tag) < 8) {
        strcat(buf, tag);
        emit(buf);
    }
    free(buf);
}
