use std::path::{Path, PathBuf};
use std::process::Command;

fn bin(name: &str) -> Command {
    Command::new(match name {
        "odns-sim" => env!("CARGO_BIN_EXE_odns-sim"),
        "odns-diag" => env!("CARGO_BIN_EXE_odns-diag"),
        "odns-resolver" => env!("CARGO_BIN_EXE_odns-resolver"),
        "odns-stub" => env!("CARGO_BIN_EXE_odns-stub"),
        _ => unreachable!(),
    })
}

fn scratch(name: &str) -> PathBuf {
    let dir = std::env::temp_dir().join(format!("odns-cli-{}-{name}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

fn run(cmd: &mut Command) -> String {
    let out = cmd.output().unwrap();
    assert!(
        out.status.success(),
        "{cmd:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/domains-10k.txt")
}

#[test]
fn keygen_writes_owner_only_keypair() {
    let dir = scratch("keygen");
    let path = dir.join("resolver.key");
    let label = run(bin("odns-resolver").args(["keygen", "--out"]).arg(&path));
    let bytes = std::fs::read(&path).unwrap();
    assert_eq!(bytes.len(), 64);
    let keypair = odns::resolver::load_keypair(&path).unwrap();
    assert_eq!(
        label.trim(),
        odns::core::derive_self_certifying_name(&keypair.public_bytes())
    );
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        assert_eq!(std::fs::metadata(&path).unwrap().permissions().mode() & 0o777, 0o600);
    }
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sim_generates_runs_and_sweeps() {
    let dir = scratch("sim");
    let trace = dir.join("trace.csv");
    run(bin("odns-sim")
        .args([
            "gen-trace",
            "--clients",
            "50",
            "--queries",
            "2000",
            "--names",
            "500",
            "--seed",
            "3",
            "--out",
        ])
        .arg(&trace));
    let text = std::fs::read_to_string(&trace).unwrap();
    assert_eq!(text.lines().count(), 2001);

    let out = dir.join("run.csv");
    run(bin("odns-sim")
        .args([
            "run",
            "--fraction",
            "0.5",
            "--capacity",
            "100",
            "--seed",
            "3",
            "--trace",
        ])
        .arg(&trace)
        .arg("--out")
        .arg(&out));
    let csv = std::fs::read_to_string(&out).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("total_queries,queries_reaching_recursive"));
    assert!(lines[1].starts_with("2000,"));

    let sweep = run(bin("odns-sim")
        .args(["sweep", "--fractions", "0,0.5,1", "--capacities", "1000", "--trace"])
        .arg(&trace));
    assert_eq!(sweep.lines().count(), 4);
    std::fs::remove_dir_all(dir).unwrap();
}

#[test]
fn sim_reports_missing_trace() {
    let out = bin("odns-sim")
        .args(["run", "--fraction", "0.5", "--trace", "/nonexistent/trace.csv"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("not found"));
}

#[test]
fn diag_qnames_and_bench() {
    let hist = run(bin("odns-diag")
        .args(["qnames", "--suffix", "odns.example.net", "--list"])
        .arg(fixture()));
    assert!(hist.starts_with("qname_length,count,oversize"));
    let total: usize = hist
        .lines()
        .skip(1)
        .map(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap())
        .sum();
    assert_eq!(total, 10_000);

    let bench = run(bin("odns-diag").args(["bench", "--iters", "100"]));
    assert_eq!(bench.lines().count(), 8);

    let out = bin("odns-diag").args(["bench", "--iters", "10"]).output().unwrap();
    assert!(!out.status.success());
}

#[test]
fn daemons_reject_incomplete_configuration() {
    let out = bin("odns-stub").args(["--listen", "127.0.0.1:0"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("recursive_addresses"));

    let out = bin("odns-resolver").args(["--listen", "127.0.0.1:0"]).output().unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("upstream_addresses"));
}
