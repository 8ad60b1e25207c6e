fn main() {
    println!("ticket");
}
