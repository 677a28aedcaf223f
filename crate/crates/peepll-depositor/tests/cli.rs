//! The depositor binary end to end: config file, key file, JSONL in and
//! out, against a vault served over TCP.

use std::io::Write;
use std::net::TcpListener;
use std::process::{Command, Stdio};
use std::sync::Arc;

use peepll_core::protocol::Mode;
use peepll_core::transport::TcpChannel;
use peepll_vault::{serve_channel, Vault, VaultConfig};

fn spawn_tcp_vault(mode: Mode) -> (String, Arc<Vault>) {
    let mut cfg = VaultConfig::new(mode);
    cfg.fp = 0.01;
    cfg.bloom_capacity = 100;
    cfg.blind_bits = 12;
    cfg.seed = Some(91);
    let vault = Arc::new(Vault::new(cfg).unwrap());
    let listener = TcpListener::bind("127.0.0.1:0").unwrap();
    let addr = listener.local_addr().unwrap().to_string();
    {
        let vault = Arc::clone(&vault);
        std::thread::spawn(move || {
            for stream in listener.incoming() {
                let vault = Arc::clone(&vault);
                std::thread::spawn(move || {
                    let mut chan = TcpChannel::new(stream.unwrap()).unwrap();
                    serve_channel(vault, &mut chan);
                });
            }
        });
    }
    (addr, vault)
}

#[test]
fn depositor_binary_rewrites_qid_fields() {
    let (addr, vault) = spawn_tcp_vault(Mode::C);
    let dir = tempfile::tempdir().unwrap();

    let key_path = dir.path().join("master.key");
    std::fs::write(&key_path, hex::encode([0x44u8; 32])).unwrap();

    let config_path = dir.path().join("depositor.toml");
    std::fs::write(
        &config_path,
        format!(
            r#"
master_secret = "{}"
mode = "C"
pvault = "{addr}"
qid_paths = ["src", "user.ip"]

[bloom]
fp = 0.01
r_events = 50.0
p_retention = 1.0
c = 2.0
blind_bits = 12
"#,
            key_path.display()
        ),
    )
    .unwrap();

    let input = "\
{\"ts\":1,\"src\":\"10.0.0.1\",\"user\":{\"ip\":\"10.1.1.1\"},\"msg\":\"login\"}\n\
{\"ts\":2,\"src\":\"10.0.0.1\",\"msg\":\"logout\"}\n\
{\"ts\":3,\"msg\":\"heartbeat\"}\n";

    let mut child = Command::new(env!("CARGO_BIN_EXE_depositor"))
        .args(["--config", config_path.to_str().unwrap()])
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child
        .stdin
        .as_mut()
        .unwrap()
        .write_all(input.as_bytes())
        .unwrap();
    let output = child.wait_with_output().unwrap();
    assert!(
        output.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&output.stderr)
    );

    let lines: Vec<serde_json::Value> = String::from_utf8(output.stdout)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(lines.len(), 3);

    let src1 = lines[0]["src"].as_str().unwrap();
    let src2 = lines[1]["src"].as_str().unwrap();
    assert!(src1.starts_with("pn:") && src1.len() == 35);
    assert_eq!(src1, src2, "same identifier, same pseudonym");
    assert!(lines[0]["user"]["ip"].as_str().unwrap().starts_with("pn:"));
    assert_ne!(lines[0]["user"]["ip"], lines[0]["src"]);
    // untouched fields survive byte-identically
    assert_eq!(lines[0]["msg"], "login");
    assert_eq!(lines[2], serde_json::json!({"ts":3,"msg":"heartbeat"}));
    // no raw identifier reached the vault
    assert!(vault.metrics().mapping_size >= 2);
    for (key, _) in vault.dump_mapping() {
        assert_ne!(key, b"10.0.0.1".to_vec());
    }
}

#[test]
fn depositor_binary_fails_cleanly_without_vault() {
    let dir = tempfile::tempdir().unwrap();
    let key_path = dir.path().join("master.key");
    std::fs::write(&key_path, [0x55u8; 32]).unwrap();
    let config_path = dir.path().join("depositor.toml");
    std::fs::write(
        &config_path,
        format!(
            "master_secret = \"{}\"\nmode = \"A\"\npvault = \"127.0.0.1:1\"\nqid_paths = [\"src\"]\n",
            key_path.display()
        ),
    )
    .unwrap();

    let output = Command::new(env!("CARGO_BIN_EXE_depositor"))
        .args(["--config", config_path.to_str().unwrap()])
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .output()
        .unwrap();
    assert!(!output.status.success());
    assert!(String::from_utf8_lossy(&output.stderr).contains("connect failed"));
}
