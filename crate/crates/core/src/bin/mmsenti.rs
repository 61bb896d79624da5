fn main() {
    std::process::exit(mmsenti::cli::main_from_env());
}
