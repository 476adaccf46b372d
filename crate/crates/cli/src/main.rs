fn main() {
    std::process::exit(selfpowered::run());
}
