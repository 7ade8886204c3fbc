char *dup_text(const char *s) {
    char *p = malloc(strlen(s));
    strcpy(p, s);
    return p;
}
