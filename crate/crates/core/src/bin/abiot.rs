fn main() {
    std::process::exit(abiot_core::cli::main());
}
