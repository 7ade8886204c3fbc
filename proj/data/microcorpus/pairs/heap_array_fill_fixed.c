void fill_heap(int n) {
    int *a = malloc(10 * sizeof(int));
    int i;
    if (a == NULL) {
        return;
    }
    for (i = 0; i < n && i < 10; i++) {
        a[i] = i;
    }
    consume(a);
    free(a);
}
