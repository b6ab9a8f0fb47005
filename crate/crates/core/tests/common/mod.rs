#![allow(dead_code)]

pub mod golden;
pub mod oracle;

/// `assert_eq!` that returns an `Err(String)` instead of panicking.
#[macro_export]
macro_rules! ensure_eq {
    ($left:expr, $right:expr $(,)?) => {
        ensure_eq!($left, $right, "values differ")
    };
    ($left:expr, $right:expr, $($msg:tt)+) => {{
        let (l, r) = (&$left, &$right);
        if l != r {
            return Err(format!("{}: left {:?} != right {:?}", format!($($msg)+), l, r));
        }
    }};
}
