fn main() {
    taylode_cli::cli::main()
}
