void read_line(void) {
    char line[32];
    gets(line);
    handle_line(line);
}
