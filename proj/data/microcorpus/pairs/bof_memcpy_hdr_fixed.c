void parse_header(const char *data, size_t len) {
    char hdr[8];
    if (len > sizeof(hdr)) {
        len = sizeof(hdr);
    }
    memcpy(hdr, data, len);
    store_header(hdr);
}
