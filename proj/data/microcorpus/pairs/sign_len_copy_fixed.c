void copy_len(const char *src, int len) {
    char dst[32];
    if (len >= 0 && len < 32) {
        memcpy(dst, src, (size_t)len);
    }
    finish(dst);
}
