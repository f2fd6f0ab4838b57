fn main() {
    std::process::exit(mangrove_pipeline::main_with(std::env::args_os()));
}
