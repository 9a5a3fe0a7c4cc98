use std::fmt;

use serde::Serialize;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub enum DiagnosticKind {
    UninitializedRead,
    WrongAddress,
    GuardOverlap,
    Divergence,
    SymbolicIndexUnsupported,
    /// `skip^{until b}` waits on a condition that only an external event can change.
    ExternalWait,
    /// Result taken from a user-supplied loop invariant; termination is assumed.
    AssumedTermination,
}

impl fmt::Display for DiagnosticKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Debug::fmt(self, f)
    }
}

/// A finding produced while computing or executing semantics.
///
/// `subject` names what the finding is about (a variable, `psi`, a guard);
/// two diagnostics with the same kind and subject are the same finding.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct Diagnostic {
    pub kind: DiagnosticKind,
    pub subject: String,
    pub message: String,
}

impl Diagnostic {
    pub fn new(kind: DiagnosticKind, subject: impl Into<String>, message: impl Into<String>) -> Self {
        Diagnostic {
            kind,
            subject: subject.into(),
            message: message.into(),
        }
    }

    pub fn uninitialized(subject: &str) -> Self {
        Diagnostic::new(
            DiagnosticKind::UninitializedRead,
            subject,
            format!("value of `{subject}` is read before it was initialized (psi)"),
        )
    }

    pub fn wrong_address(subject: &str) -> Self {
        Diagnostic::new(
            DiagnosticKind::WrongAddress,
            subject,
            format!("pointer `{subject}` receives a value that is not an address"),
        )
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}[{}]: {}", self.kind, self.subject, self.message)
    }
}

/// Adds `d` unless an entry with the same kind and subject is already present.
pub fn push_unique(list: &mut Vec<Diagnostic>, d: Diagnostic) {
    if !list.iter().any(|e| e.kind == d.kind && e.subject == d.subject) {
        list.push(d);
    }
}

pub fn extend_unique(list: &mut Vec<Diagnostic>, more: impl IntoIterator<Item = Diagnostic>) {
    for d in more {
        push_unique(list, d);
    }
}
