fn main() {
    std::process::exit(accel_alloc::cli::main_with_args(std::env::args_os()));
}
