void report_error(const char *user) {
    char out[80];
    snprintf(out, sizeof(out), "%s", user);
    write_log(out);
}
