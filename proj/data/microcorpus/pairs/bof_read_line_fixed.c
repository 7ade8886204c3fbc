void read_line(void) {
    char line[32];
    if (fgets(line, sizeof(line), stdin) != NULL) {
        handle_line(line);
    }
}
