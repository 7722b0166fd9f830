fn main() {
    eprintln!("command line interface not yet wired");
    std::process::exit(2);
}
