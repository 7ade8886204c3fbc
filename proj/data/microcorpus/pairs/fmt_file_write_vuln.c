void save_note(FILE *fp, const char *note) {
    /* note is attacker controlled */
    fprintf(fp, note);
}
