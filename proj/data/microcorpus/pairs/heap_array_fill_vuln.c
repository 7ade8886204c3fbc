void fill_heap(int n) {
    int *a = malloc(10 * sizeof(int));
    int i;
    for (i = 0; i < n; i++) {
        a[i] = i;
    }
    consume(a);
    free(a);
}
