fn main() { eprintln!("hello"); }
