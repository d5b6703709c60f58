// SPDX-License-Identifier: Apache-2.0
//! `relaxec` binary.

fn main() {
    let code = relaxec::cli::route_command(
        std::env::args_os(),
        &mut std::io::stdout().lock(),
        &mut std::io::stderr().lock(),
    );
    std::process::exit(code);
}
