void join_path(const char *dir, const char *file) {
    char path[64];
    // dir and file come from the request
    snprintf(path, sizeof(path), "%s/%s", dir, file);
    open_path(path);
}
