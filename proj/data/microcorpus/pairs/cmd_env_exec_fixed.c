void run_tool(void) {
    char *arg = getenv("TOOL_ARG");
    /* no shell involved */
    if (arg != NULL && is_safe_arg(arg)) {
        execlp("ls", "ls", arg, (char *)NULL);
    }
}
