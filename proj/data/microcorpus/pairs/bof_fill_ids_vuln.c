void fill_ids(int count) {
    int ids[10];
    int i;
    for (i = 0; i <= count; i++) {
        ids[i] = next_id();
    }
    use_ids(ids);
}
