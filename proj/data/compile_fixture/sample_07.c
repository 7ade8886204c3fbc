void put_at(int idx, char c) {
    char buf[10];
    if (idx >= 0 && idx < 10) {
        buf[idx] = c;
    }
}
