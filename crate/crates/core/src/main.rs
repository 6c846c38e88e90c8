fn main() {
    std::process::exit(scene_factory::cli::run(std::env::args_os()));
}
