fn main() {
    std::process::exit(ce_quant::cli::main());
}
