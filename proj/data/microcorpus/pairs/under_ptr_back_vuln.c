void trim_tail(char *s) {
    char *end = s + strlen(s) - 1;
    while (*end == ' ') {
        *end = '\0';
        end--;
    }
}
