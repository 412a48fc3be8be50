fn main() {
    println!("codepolicy CLI: pipeline commands arrive with the runtime modules");
}
