fn main() {
    std::process::exit(gnssrag::app::main_from(std::env::args_os()));
}
