void parse_header(const char *data, size_t len) {
    char hdr[8];
    memcpy(hdr, data, len);
    store_header(hdr);
}
