int ping_host(const char *host) {
    char cmd[128];
    if (!valid_hostname(host)) {
        return -1;
    }
    snprintf(cmd, sizeof(cmd), "ping -c 1 %s", host);
    return system(cmd);
}
