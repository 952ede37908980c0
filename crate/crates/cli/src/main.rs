fn main() {
    std::process::exit(vesim::main_with(std::env::args_os()));
}
