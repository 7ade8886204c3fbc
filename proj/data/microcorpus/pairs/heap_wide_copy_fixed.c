void copy_wide(const wchar_t *src) {
    wchar_t *dst = malloc(10 * sizeof(wchar_t));
    if (dst == NULL) {
        return;
    }
    wcsncpy(dst, src, 9);
    dst[9] = L'\0';
    show(dst);
    free(dst);
}
