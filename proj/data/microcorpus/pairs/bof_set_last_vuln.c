void set_last(int value) {
    int table[4] = {0};
    table[4] = value;
    publish(table);
}
