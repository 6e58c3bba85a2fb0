"""Secondary acceptance: the client-side conformance probe passes."""

import subprocess
import sys


def test_backend_check_against_bridge(bridge):
    host, port = bridge.address
    proc = subprocess.run(
        [sys.executable, "-m", "meshtex.cli", "backend-check",
         "--backend", f"remote:{host}:{port}"],
        capture_output=True, text=True, timeout=120,
    )
    assert proc.returncode == 0, proc.stdout + proc.stderr
    assert proc.stdout.count("PASS") == 3
    assert "FAIL" not in proc.stdout
    print("\nACCEPTANCE PASS: bridge protocol conformance (backend-check)")
