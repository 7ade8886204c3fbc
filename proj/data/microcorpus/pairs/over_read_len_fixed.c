void print_prefix(const char *s, size_t n) {
    char out[16];
    if (n > 15) {
        n = 15;
    }
    memcpy(out, s, n);
    out[n] = '\0';
    puts(out);
}
