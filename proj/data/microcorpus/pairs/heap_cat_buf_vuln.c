void append_tag(const char *tag) {
    char *buf = calloc(8, 1);
    // tag length unchecked
    strcat(buf, tag);
    emit(buf);
    free(buf);
}
