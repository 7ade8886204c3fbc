void copy_name(const char *src) {
    char buf[16];
    /* no bound on the copy */
    strcpy(buf, src);
    log_name(buf);
}
