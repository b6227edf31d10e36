fn main() {
    println!("cellopt");
}
