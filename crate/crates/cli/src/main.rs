fn main() {
    std::process::exit(fpvgl::main_with(std::env::args_os()));
}
