void copy_wide(const wchar_t *src) {
    wchar_t *dst = malloc(10);
    wcscpy(dst, src);
    show(dst);
    free(dst);
}
