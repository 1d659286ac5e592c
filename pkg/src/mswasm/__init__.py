"""Memory-safe WebAssembly (segments and handles) with trace monitors, a MiniC compiler and a robustness harness."""
