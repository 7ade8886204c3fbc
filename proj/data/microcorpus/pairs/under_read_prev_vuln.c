char prev_char(const char *s, int pos) {
    // pos may be zero
    return s[pos - 1];
}
