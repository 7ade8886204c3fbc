void put_at(int idx, char c) {
    char buf[10];
    buf[idx] = c;
    flush_buf(buf);
}
