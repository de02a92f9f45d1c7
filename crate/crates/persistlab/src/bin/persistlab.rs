fn main() {
    // CLI wiring lands after the analysis modules.
}
