from .diagnostics import DiagnosticsMonitor, DiagnosticsRecord, compatibility_residual, measure
