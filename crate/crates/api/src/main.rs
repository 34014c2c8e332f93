fn main() {
    std::process::exit(twai_api::cli::main());
}
