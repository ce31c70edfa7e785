fn main() -> std::process::ExitCode {
    stereo_adapt::cli::run()
}
