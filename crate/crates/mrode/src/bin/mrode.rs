fn main() {
    // CLI filled in once the library lands.
}
