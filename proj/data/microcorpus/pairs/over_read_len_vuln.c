void print_prefix(const char *s, size_t n) {
    char out[16];
    memcpy(out, s, 16);
    out[n] = '\0';
    puts(out);
}
