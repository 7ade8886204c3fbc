void fill_ids(int count) {
    int ids[10];
    int i;
    if (count > 10) {
        count = 10;
    }
    for (i = 0; i < count; i++) {
        ids[i] = next_id();
    }
    use_ids(ids);
}
