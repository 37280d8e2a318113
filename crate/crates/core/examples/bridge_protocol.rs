//! Talking to a backend over the line protocol: a mock served on an
//! in-process pipe, queried through the same client used for subprocesses.

use std::io::BufReader;

use shapcheck::bridge::{serve, LineClient};
use shapcheck::mock::LinearLogitModel;
use shapcheck::{Bridge, CoalitionMask, MultimodalInput};

fn main() -> shapcheck::Result<()> {
    let (req_rx, req_tx) = std::io::pipe()?;
    let (resp_rx, resp_tx) = std::io::pipe()?;
    let model = LinearLogitModel::new(vec![0.5, -0.5], vec![1.0, 0.0, 0.0, 0.2], 0.0);
    let server = std::thread::spawn(move || serve(&model, BufReader::new(req_rx), resp_tx));

    let bridge = Bridge::new(LineClient::from_streams(BufReader::new(resp_rx), req_tx));
    println!("handshake: {:?}", bridge.handshake()?);
    let input = MultimodalInput::build(vec!["Is", "it"], 2, "img")?;
    for bits in ["111111", "001000", "000000"] {
        let mask = CoalitionMask::parse(bits)?;
        let p = bridge.score_masked(&input, &mask, &["A".to_string()])?;
        println!("mask {bits}: p(A) = {:.4}", p[0]);
    }
    drop(bridge);
    server.join().expect("server thread")?;
    Ok(())
}
