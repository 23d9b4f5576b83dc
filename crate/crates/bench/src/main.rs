fn main() {
    std::process::exit(uavee_bench::cli::cli_main(std::env::args_os()));
}
