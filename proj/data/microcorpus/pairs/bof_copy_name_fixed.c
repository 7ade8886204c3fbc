void copy_name(const char *src) {
    char buf[16];
    /* bounded copy */
    strncpy(buf, src, sizeof(buf) - 1);
    buf[sizeof(buf) - 1] = '\0';
    log_name(buf);
}
