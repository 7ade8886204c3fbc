char prev_char(const char *s, int pos) {
    // pos may be zero
    if (pos <= 0) {
        return '\0';
    }
    return s[pos - 1];
}
