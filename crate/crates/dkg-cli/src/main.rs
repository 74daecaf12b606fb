fn main() {
    println!("dkg harness: experiments not wired up yet");
}
