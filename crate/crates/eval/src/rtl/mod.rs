// SPDX-License-Identifier: Apache-2.0

//! Syntax and function checks of generated RTL against a testbench.
//!
//! Testbenches report through sentinels: any line containing `TEST_FAILED`
//! marks a failure, and `ALL_TESTS_PASSED` must be printed for a pass.

pub mod interp;
pub mod parse;

use std::io::Read;
use std::path::{Path, PathBuf};
use std::process::{Command, Stdio};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use wait_timeout::ChildExt;

use crate::error::{EvalError, Result};
pub use interp::Simulation;
pub use parse::{parse_modules, Module};

pub const PASS_SENTINEL: &str = "ALL_TESTS_PASSED";
pub const FAIL_SENTINEL: &str = "TEST_FAILED";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    /// Shell command with `{rtl}`, `{tb}` and `{out}` placeholders. Exit
    /// status 0 means the sources compiled. `None` selects the built-in
    /// interpreter.
    pub command: Option<String>,
    pub timeout_secs: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            command: None,
            timeout_secs: 60,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RtlResult {
    pub syntax_pass: bool,
    pub function_pass: bool,
    pub gpt_score: Option<f64>,
    pub log_path: Option<PathBuf>,
    pub log: String,
}

fn verdict(output: &str) -> bool {
    output.contains(PASS_SENTINEL) && !output.contains(FAIL_SENTINEL)
}

/// Pulls Verilog out of a chat reply: the first fenced block that holds a
/// module, else the span from the first `module` to the last `endmodule`,
/// else the whole reply.
pub fn extract_rtl(reply: &str) -> String {
    let mut rest = reply;
    while let Some(start) = rest.find("```") {
        let after = &rest[start + 3..];
        let body_start = after.find('\n').map_or(after.len(), |i| i + 1);
        let Some(end) = after[body_start..].find("```") else {
            break;
        };
        let body = &after[body_start..body_start + end];
        if body.contains("module") {
            return body.trim().to_string() + "\n";
        }
        rest = &after[body_start + end + 3..];
    }
    if let (Some(s), Some(e)) = (reply.find("module"), reply.rfind("endmodule")) {
        if s < e {
            return reply[s..e + "endmodule".len()].to_string() + "\n";
        }
    }
    reply.to_string()
}

/// Top-level testbench module: one that no other module instantiates.
fn testbench_top(tb: &[Module]) -> Option<String> {
    let instantiated: Vec<&str> = tb
        .iter()
        .flat_map(|m| &m.items)
        .filter_map(|i| match i {
            parse::Item::Instance(inst) => Some(inst.module.as_str()),
            _ => None,
        })
        .collect();
    tb.iter()
        .find(|m| !instantiated.contains(&m.name.as_str()))
        .map(|m| m.name.clone())
}

fn builtin(rtl: &str, tb: &str) -> Result<RtlResult> {
    let tb_mods = parse_modules(tb).map_err(|e| EvalError::Rtl(format!("testbench: {e}")))?;
    let top = testbench_top(&tb_mods)
        .ok_or_else(|| EvalError::Rtl("testbench has no top module".into()))?;
    let mut r = RtlResult::default();
    let dut = match parse_modules(rtl) {
        Ok(m) => m,
        Err(e) => {
            r.log = format!("compile error: {e}\n");
            return Ok(r);
        }
    };
    if let Some(m) = dut
        .iter()
        .find(|m| tb_mods.iter().any(|t| t.name == m.name))
    {
        r.log = format!("compile error: module `{}` defined twice\n", m.name);
        return Ok(r);
    }
    let all: Vec<Module> = tb_mods.into_iter().chain(dut).collect();
    let mut sim = match Simulation::elaborate(&all, &top) {
        Ok(s) => s,
        Err(e) => {
            r.log = format!("elaboration error: {e}\n");
            return Ok(r);
        }
    };
    r.syntax_pass = true;
    match sim.run() {
        Ok(()) => {
            r.log = sim.output().to_string();
            r.function_pass = verdict(&r.log);
        }
        Err(e) => r.log = format!("{}runtime error: {e}\n", sim.output()),
    }
    Ok(r)
}

fn shell_quote(p: &Path) -> String {
    format!("'{}'", p.display().to_string().replace('\'', r"'\''"))
}

fn external(command: &str, rtl: &str, tb: &str, timeout: Duration) -> Result<RtlResult> {
    let dir = tempfile::tempdir()?;
    let (rtl_path, tb_path, out_path) = (
        dir.path().join("rtl.v"),
        dir.path().join("tb.v"),
        dir.path().join("sim.out"),
    );
    std::fs::write(&rtl_path, rtl)?;
    std::fs::write(&tb_path, tb)?;
    let cmd = command
        .replace("{rtl}", &shell_quote(&rtl_path))
        .replace("{tb}", &shell_quote(&tb_path))
        .replace("{out}", &shell_quote(&out_path));
    let mut child = Command::new("sh")
        .arg("-c")
        .arg(&cmd)
        .current_dir(dir.path())
        .stdin(Stdio::null())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .map_err(|e| EvalError::SimulatorNotFound(format!("sh: {e}")))?;
    let mut stdout = child.stdout.take().expect("piped");
    let mut stderr = child.stderr.take().expect("piped");
    let readers = (
        std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stdout.read_to_string(&mut s);
            s
        }),
        std::thread::spawn(move || {
            let mut s = String::new();
            let _ = stderr.read_to_string(&mut s);
            s
        }),
    );
    let status = match child.wait_timeout(timeout)? {
        Some(s) => s,
        None => {
            let _ = child.kill();
            let _ = child.wait();
            return Err(EvalError::Timeout(timeout.as_secs()));
        }
    };
    let mut log = readers.0.join().unwrap_or_default();
    let err = readers.1.join().unwrap_or_default();
    if status.code() == Some(127) {
        return Err(EvalError::SimulatorNotFound(err.trim().to_string()));
    }
    log.push_str(&err);
    if let Ok(extra) = std::fs::read_to_string(&out_path) {
        log.push_str(&extra);
    }
    let syntax_pass = status.success();
    Ok(RtlResult {
        syntax_pass,
        function_pass: syntax_pass && verdict(&log),
        log,
        ..RtlResult::default()
    })
}

/// Compiles and runs `rtl` with testbench `tb`. When `log_path` is given the
/// simulator output is written there.
pub fn run_testbench(
    rtl: &str,
    tb: &str,
    cfg: &SimConfig,
    log_path: Option<&Path>,
) -> Result<RtlResult> {
    let mut r = match &cfg.command {
        Some(c) => external(c, rtl, tb, Duration::from_secs(cfg.timeout_secs))?,
        None => builtin(rtl, tb)?,
    };
    if let Some(p) = log_path {
        std::fs::write(p, &r.log)?;
        r.log_path = Some(p.to_path_buf());
    }
    debug_assert!(!r.function_pass || r.syntax_pass);
    Ok(r)
}

#[cfg(test)]
mod tests {
    use super::*;

    const ADD: &str =
        "module add(input [1:0] a, b, output [2:0] s);\n  assign s = a + b;\nendmodule\n";
    const TB: &str = "module tb;\n  reg [1:0] a, b;\n  wire [2:0] s;\n  integer errors;\n  add dut(.a(a), .b(b), .s(s));\n\
        initial begin\n    errors = 0;\n    a = 2'd3; b = 2'd3; #1;\n    if (s !== 3'd6) begin errors = errors + 1; $display(\"TEST_FAILED\"); end\n\
        if (errors == 0) $display(\"ALL_TESTS_PASSED\");\n    $finish;\n  end\nendmodule\n";

    #[test]
    fn extraction() {
        let reply = format!("Step 1: it adds.\n```verilog\n{ADD}```\nDone.");
        assert_eq!(extract_rtl(&reply), ADD);
        let reply = format!("```text\nno code\n```\nHere: {ADD} thanks");
        assert_eq!(extract_rtl(&reply).trim(), ADD.trim());
        assert_eq!(extract_rtl("nothing"), "nothing");
    }

    #[test]
    fn builtin_verdicts() {
        let ok = run_testbench(ADD, TB, &SimConfig::default(), None).unwrap();
        assert!(ok.syntax_pass && ok.function_pass, "{}", ok.log);
        let wrong = run_testbench(
            &ADD.replace("a + b", "a + b + 1"),
            TB,
            &SimConfig::default(),
            None,
        )
        .unwrap();
        assert!(wrong.syntax_pass && !wrong.function_pass);
        let broken = run_testbench(&ADD.replace(';', ""), TB, &SimConfig::default(), None).unwrap();
        assert!(!broken.syntax_pass && !broken.function_pass);
        let renamed = run_testbench(
            &ADD.replace("module add", "module adder"),
            TB,
            &SimConfig::default(),
            None,
        )
        .unwrap();
        assert!(!renamed.syntax_pass);
    }

    #[test]
    fn external_command() {
        let cfg = SimConfig {
            command: Some("grep -q 'a + b;' {rtl} && echo ALL_TESTS_PASSED".into()),
            timeout_secs: 10,
        };
        let r = run_testbench(ADD, TB, &cfg, None).unwrap();
        assert!(r.syntax_pass && r.function_pass);
        let r = run_testbench("module x; endmodule", TB, &cfg, None).unwrap();
        assert!(!r.syntax_pass && !r.function_pass);
        let missing = SimConfig {
            command: Some("definitely-not-a-simulator-xyz {rtl}".into()),
            timeout_secs: 10,
        };
        assert!(matches!(
            run_testbench(ADD, TB, &missing, None),
            Err(EvalError::SimulatorNotFound(_))
        ));
        let slow = SimConfig {
            command: Some("sleep 5".into()),
            timeout_secs: 1,
        };
        assert!(matches!(
            run_testbench(ADD, TB, &slow, None),
            Err(EvalError::Timeout(1))
        ));
    }
}
