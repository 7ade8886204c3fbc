void load_block(short size) {
    char block[64];
    if (size > 0 && size < 64) {
        read_block(block, (size_t)size);
    }
}
