char *dup_text(const char *s) {
    char *p = malloc(strlen(s) + 1);
    if (p == NULL) {
        return NULL;
    }
    strcpy(p, s);
    return p;
}
