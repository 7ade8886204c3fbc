void save_note(FILE *fp, const char *note) {
    /* note is attacker controlled */
    fputs(note, fp);
}
