int ping_host(const char *host) {
    char cmd[128];
    if (!valid_hostname(host) {
        return -1;
    }
    return system(cmd);
}
