void run_tool(void) {
    char cmd[100] = "ls ";
    char *arg = getenv("TOOL_ARG");
    if (arg != NULL) {
        strncat(cmd, arg, 100 - strlen(cmd) - 1);
    }
    /* arg reaches the shell */
    system(cmd);
}
