//! Parser and timing interpreter for the sequencer mini-assembly.
//!
//! ```text
//! # waveforms
//! {"h_i":[...],"h_q":[...]}
//! # schedule
//! move R0,1000
//! shot:
//! wait 200000
//! play h_i,h_q,40
//! set_phase 90.000
//! acquire 0,500
//! loop shot,R0
//! stop
//! ```
//!
//! `play` and `acquire` advance time by their last operand, `wait` by its only
//! one. `loop label,R` decrements `R` and jumps back to `label` while it is non-zero.

use std::collections::{BTreeMap, HashMap};

use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum AsmError {
    #[error("missing `{0}` section header")]
    MissingSection(&'static str),
    #[error("waveform block is not valid JSON: {0}")]
    BadWaveforms(String),
    #[error("line {line}: {msg}")]
    Syntax { line: usize, msg: String },
    #[error("line {line}: unknown waveform `{name}`")]
    UnknownWaveform { line: usize, name: String },
    #[error("line {line}: undefined label `{name}`")]
    UndefinedLabel { line: usize, name: String },
    #[error("program does not end with `stop`")]
    NoStop,
    #[error("register {0} read before being set")]
    UnsetRegister(String),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Instr {
    Label(String),
    Move { reg: String, imm: u64 },
    Loop { label: String, reg: String },
    Play { wf_i: String, wf_q: String, ns: u64 },
    Wait(u64),
    Acquire { bin: u64, ns: u64 },
    SetPhase(f64),
    Stop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Program {
    pub waveforms: BTreeMap<String, Vec<f64>>,
    pub instrs: Vec<Instr>,
}

fn is_register(s: &str) -> bool {
    s.len() > 1 && s.starts_with('R') && s[1..].chars().all(|c| c.is_ascii_digit())
}

fn is_ident(s: &str) -> bool {
    let mut chars = s.chars();
    matches!(chars.next(), Some(c) if c.is_ascii_alphabetic() || c == '_')
        && chars.all(|c| c.is_ascii_alphanumeric() || c == '_')
}

pub fn parse_program(text: &str) -> Result<Program, AsmError> {
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, "# waveforms")) => {}
        _ => return Err(AsmError::MissingSection("# waveforms")),
    }
    let (_, wf_line) = lines.next().ok_or(AsmError::MissingSection("# waveforms"))?;
    let waveforms: BTreeMap<String, Vec<f64>> =
        serde_json::from_str(wf_line).map_err(|e| AsmError::BadWaveforms(e.to_string()))?;
    match lines.next() {
        Some((_, "# schedule")) => {}
        _ => return Err(AsmError::MissingSection("# schedule")),
    }

    let mut instrs = Vec::new();
    for (idx, raw) in lines {
        let line = idx + 1;
        let raw = raw.trim();
        if raw.is_empty() {
            continue;
        }
        let syntax = |msg: &str| AsmError::Syntax {
            line,
            msg: format!("{msg}: `{raw}`"),
        };
        if let Some(label) = raw.strip_suffix(':') {
            if !is_ident(label) {
                return Err(syntax("bad label"));
            }
            instrs.push(Instr::Label(label.to_owned()));
            continue;
        }
        let (op, rest) = raw.split_once(' ').unwrap_or((raw, ""));
        let args: Vec<&str> = if rest.is_empty() {
            Vec::new()
        } else {
            rest.split(',').map(str::trim).collect()
        };
        let int = |s: &str| s.parse::<u64>().map_err(|_| syntax("expected unsigned integer"));
        let instr = match (op, args.as_slice()) {
            ("move", [reg, imm]) if is_register(reg) => Instr::Move {
                reg: reg.to_string(),
                imm: int(imm)?,
            },
            ("loop", [label, reg]) if is_ident(label) && is_register(reg) => Instr::Loop {
                label: label.to_string(),
                reg: reg.to_string(),
            },
            ("play", [i, q, ns]) => {
                for name in [i, q] {
                    if !waveforms.contains_key(*name) {
                        return Err(AsmError::UnknownWaveform {
                            line,
                            name: name.to_string(),
                        });
                    }
                }
                Instr::Play {
                    wf_i: i.to_string(),
                    wf_q: q.to_string(),
                    ns: int(ns)?,
                }
            }
            ("wait", [ns]) => Instr::Wait(int(ns)?),
            ("acquire", [bin, ns]) => Instr::Acquire {
                bin: int(bin)?,
                ns: int(ns)?,
            },
            ("set_phase", [deg]) => {
                let d: f64 = deg.parse().map_err(|_| syntax("expected phase in degrees"))?;
                if !(0.0..360.0).contains(&d) {
                    return Err(syntax("phase outside [0, 360)"));
                }
                Instr::SetPhase(d)
            }
            ("stop", []) => Instr::Stop,
            _ => return Err(syntax("unknown instruction")),
        };
        if let Instr::Loop { label, .. } = &instr {
            if !instrs.contains(&Instr::Label(label.clone())) {
                return Err(AsmError::UndefinedLabel {
                    line,
                    name: label.clone(),
                });
            }
        }
        instrs.push(instr);
    }
    if instrs.last() != Some(&Instr::Stop) {
        return Err(AsmError::NoStop);
    }
    Ok(Program { waveforms, instrs })
}

impl Program {
    /// Total real time, in nanoseconds, of executing the program to `stop`.
    pub fn run_time_ns(&self) -> Result<u64, AsmError> {
        let labels: HashMap<&str, usize> = self
            .instrs
            .iter()
            .enumerate()
            .filter_map(|(i, ins)| match ins {
                Instr::Label(l) => Some((l.as_str(), i)),
                _ => None,
            })
            .collect();
        let mut regs: HashMap<&str, u64> = HashMap::new();
        let mut pc = 0;
        let mut t = 0u64;
        while pc < self.instrs.len() {
            match &self.instrs[pc] {
                Instr::Label(_) | Instr::SetPhase(_) => {}
                Instr::Move { reg, imm } => {
                    regs.insert(reg, *imm);
                }
                Instr::Play { ns, .. } | Instr::Wait(ns) | Instr::Acquire { ns, .. } => t += ns,
                Instr::Loop { label, reg } => {
                    let r = regs
                        .get_mut(reg.as_str())
                        .ok_or_else(|| AsmError::UnsetRegister(reg.clone()))?;
                    *r = r.saturating_sub(1);
                    if *r > 0 {
                        pc = labels[label.as_str()];
                        continue;
                    }
                }
                Instr::Stop => break,
            }
            pc += 1;
        }
        Ok(t)
    }

    pub fn acquisitions_per_pass(&self) -> usize {
        self.instrs.iter().filter(|i| matches!(i, Instr::Acquire { .. })).count()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SRC: &str = "# waveforms\n{\"a\":[0.1],\"b\":[0.0]}\n# schedule\nmove R0,3\nshot:\nwait 10\nplay a,b,40\nset_phase 90.000\nacquire 0,5\nloop shot,R0\nstop\n";

    #[test]
    fn parses_and_times() {
        let p = parse_program(SRC).unwrap();
        assert_eq!(p.instrs.len(), 8);
        assert_eq!(p.run_time_ns().unwrap(), 3 * 55);
        assert_eq!(p.acquisitions_per_pass(), 1);
    }

    #[test]
    fn rejects_unknown_waveform() {
        let src = SRC.replace("play a,b,40", "play a,c,40");
        assert!(matches!(parse_program(&src), Err(AsmError::UnknownWaveform { .. })));
    }

    #[test]
    fn rejects_undefined_label() {
        let src = SRC.replace("loop shot,R0", "loop nowhere,R0");
        assert!(matches!(parse_program(&src), Err(AsmError::UndefinedLabel { .. })));
    }

    #[test]
    fn rejects_garbage() {
        assert!(matches!(parse_program("hello"), Err(AsmError::MissingSection(_))));
        let src = SRC.replace("wait 10", "jump 10");
        assert!(matches!(parse_program(&src), Err(AsmError::Syntax { .. })));
        let src = SRC.replace("move R0,3", "move X0,3");
        assert!(matches!(parse_program(&src), Err(AsmError::Syntax { .. })));
        let src = SRC.replace("\nstop\n", "\n");
        assert_eq!(parse_program(&src), Err(AsmError::NoStop));
        let src = SRC.replace("set_phase 90.000", "set_phase 400");
        assert!(matches!(parse_program(&src), Err(AsmError::Syntax { .. })));
    }
}
