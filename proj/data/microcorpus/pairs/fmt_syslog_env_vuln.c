void audit_env(void) {
    char *v = getenv("AUDIT_MSG");
    if (v != NULL) {
        syslog(LOG_INFO, v);
    }
}
