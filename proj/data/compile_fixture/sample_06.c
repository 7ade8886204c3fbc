void fill_heap(int n) {
    int *a = malloc(10 * sizeof(int));
    for (int i = 0; i < n && i < 10; i++) {
        a[i] = i;
    }
    free(a);
}
