//! Child-process plumbing: spawn in its own process group, feed stdin,
//! capture bounded output, kill the whole group on deadline.

use std::io::{self, Read, Write};
use std::os::unix::process::{CommandExt, ExitStatusExt};
use std::path::Path;
use std::process::{Child, Command, ExitStatus, Stdio};
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use wait_timeout::ChildExt;

/// Resource limits applied to every child.
#[derive(Debug, Clone, Copy)]
pub struct ChildLimits {
    pub timeout: Duration,
    pub max_output_bytes: usize,
    pub max_memory_mb: Option<u64>,
}

#[derive(Debug)]
pub struct ChildOutcome {
    pub status: Option<ExitStatus>,
    pub timed_out: bool,
    /// Stdout went past `max_output_bytes`; the child was killed.
    pub output_overflow: bool,
    pub stdout: Vec<u8>,
    pub stderr: Vec<u8>,
    pub elapsed: Duration,
}

impl ChildOutcome {
    pub fn exited_ok(&self) -> bool {
        self.status.is_some_and(|s| s.success())
    }

    pub fn signal(&self) -> Option<i32> {
        self.status.and_then(|s| s.signal())
    }

    pub fn describe_status(&self) -> String {
        match self.status {
            Some(s) => match (s.code(), s.signal()) {
                (Some(c), _) => format!("exit code {c}"),
                (None, Some(sig)) => format!("killed by signal {sig}"),
                _ => "unknown exit status".into(),
            },
            None => "no exit status".into(),
        }
    }
}

const POLL: Duration = Duration::from_millis(10);

fn reader(
    mut src: impl Read + Send + 'static,
    cap: usize,
    overflow: Option<Arc<AtomicBool>>,
) -> thread::JoinHandle<Vec<u8>> {
    thread::spawn(move || {
        let mut kept = Vec::new();
        let mut buf = [0u8; 8192];
        loop {
            match src.read(&mut buf) {
                Ok(0) | Err(_) => break,
                Ok(n) => {
                    let room = cap.saturating_sub(kept.len());
                    kept.extend_from_slice(&buf[..n.min(room)]);
                    if n > room {
                        if let Some(flag) = &overflow {
                            flag.store(true, Ordering::SeqCst);
                        }
                    }
                }
            }
        }
        kept
    })
}

fn kill_group(child: &mut Child) {
    let pid = child.id() as libc::pid_t;
    // SAFETY: plain syscall; negative pid addresses the group created by
    // process_group(0) at spawn
    unsafe {
        libc::kill(-pid, libc::SIGKILL);
    }
    let _ = child.kill();
}

/// Runs `argv` in `cwd` with `stdin` as its input and waits at most
/// `limits.timeout`. Spawn failures are returned as `io::Error`.
pub fn run_child(
    argv: &[String],
    cwd: &Path,
    stdin: &[u8],
    limits: &ChildLimits,
) -> io::Result<ChildOutcome> {
    let (program, args) = argv
        .split_first()
        .ok_or_else(|| io::Error::new(io::ErrorKind::InvalidInput, "empty command"))?;
    let mut cmd = Command::new(program);
    cmd.args(args)
        .current_dir(cwd)
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .env("PYTHONDONTWRITEBYTECODE", "1")
        .env("PYTHONHASHSEED", "0")
        .process_group(0);
    if let Some(mb) = limits.max_memory_mb {
        let bytes = mb.saturating_mul(1024 * 1024) as libc::rlim_t;
        // SAFETY: setrlimit is async-signal-safe and touches no Rust state
        unsafe {
            cmd.pre_exec(move || {
                let lim = libc::rlimit {
                    rlim_cur: bytes,
                    rlim_max: bytes,
                };
                if libc::setrlimit(libc::RLIMIT_AS, &lim) != 0 {
                    return Err(io::Error::last_os_error());
                }
                Ok(())
            });
        }
    }

    let started = Instant::now();
    let mut child = cmd.spawn()?;
    let overflow = Arc::new(AtomicBool::new(false));
    let out = reader(
        child.stdout.take().expect("piped stdout"),
        limits.max_output_bytes,
        Some(overflow.clone()),
    );
    let err = reader(
        child.stderr.take().expect("piped stderr"),
        limits.max_output_bytes,
        None,
    );
    let mut input = child.stdin.take().expect("piped stdin");
    let data = stdin.to_vec();
    let writer = thread::spawn(move || {
        // a child that exits without reading closes the pipe; that is fine
        let _ = input.write_all(&data);
    });

    let deadline = started + limits.timeout;
    let mut timed_out = false;
    let mut output_overflow = false;
    let status = loop {
        let now = Instant::now();
        if now >= deadline {
            timed_out = true;
            kill_group(&mut child);
            break child.wait().ok();
        }
        if overflow.load(Ordering::SeqCst) {
            output_overflow = true;
            kill_group(&mut child);
            break child.wait().ok();
        }
        match child.wait_timeout(POLL.min(deadline - now))? {
            Some(s) => break Some(s),
            None => continue,
        }
    };
    let elapsed = started.elapsed();
    // stray grandchildren may still hold the pipes open
    kill_group(&mut child);
    let _ = writer.join();
    let stdout = out.join().unwrap_or_default();
    let stderr = err.join().unwrap_or_default();
    output_overflow |= overflow.load(Ordering::SeqCst) && !timed_out;
    Ok(ChildOutcome {
        status,
        timed_out,
        output_overflow,
        stdout,
        stderr,
        elapsed,
    })
}

/// Counting semaphore bounding concurrent child processes.
#[derive(Debug)]
pub struct Pool {
    free: Mutex<usize>,
    cv: Condvar,
}

pub struct Permit<'a>(&'a Pool);

impl Pool {
    pub fn new(size: usize) -> Self {
        Pool {
            free: Mutex::new(size.max(1)),
            cv: Condvar::new(),
        }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut free = self.free.lock().unwrap();
        while *free == 0 {
            free = self.cv.wait(free).unwrap();
        }
        *free -= 1;
        Permit(self)
    }
}

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.free.lock().unwrap() += 1;
        self.0.cv.notify_one();
    }
}
