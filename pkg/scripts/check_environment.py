#!/usr/bin/env python3
"""
Check the environment configuration and that all required packages import.
"""

import sys
from pathlib import Path

# Add parent directory to path
sys.path.insert(0, str(Path(__file__).parent.parent))


def test_env_file():
    """Check for an optional .env file"""
    if not Path('.env').exists():
        print("⚠️  Optional: .env file not found, using defaults")
        print("   Run: cp .env.example .env")
    else:
        print("✅ .env file exists")
    return True


def test_settings():
    """Load GROUNDER_* settings"""
    from settings import load_settings

    settings = load_settings()
    print(f"✅ Output directory: {settings.output_dir}")
    print(f"✅ Log level: {settings.log_level}")
    print(f"✅ Log file: {settings.log_file or '(console only)'}")
    print(f"✅ Worker threads: {settings.jobs}")
    return True


def test_dependencies():
    """Test required dependencies"""
    ok = True
    for name in ("numpy", "scipy", "aiofiles", "dotenv"):
        try:
            module = __import__(name)
            version = getattr(module, "__version__", "")
            print(f"✅ {name} installed {f'(version {version})' if version else ''}".rstrip())
        except ImportError:
            print(f"❌ {name} not installed")
            print("   Run: pip install -r requirements.txt")
            ok = False
    return ok


def test_output_dir():
    """Check the output directory is writable"""
    from settings import load_settings

    output_dir = load_settings().output_dir
    if not output_dir.exists():
        print("⚠️  Creating output directory...")
        output_dir.mkdir(parents=True, exist_ok=True)
    probe = output_dir / ".write_check"
    probe.write_text("ok")
    probe.unlink()
    print("✅ Output directory ready")
    return True


def main():
    """Run all checks"""
    print("🔍 Checking Step Grounder environment...\n")

    checks = [
        ("Environment File", test_env_file),
        ("Dependencies", test_dependencies),
        ("Settings", test_settings),
        ("Output Directory", test_output_dir),
    ]

    results = []
    for name, check in checks:
        print(f"\n{name}:")
        try:
            results.append(check())
        except Exception as e:
            print(f"❌ Error: {e}")
            results.append(False)

    print("\n" + "=" * 60)
    passed = sum(results)
    total = len(results)

    if passed == total:
        print(f"✅ All checks passed! ({passed}/{total})")
        print("\n🚀 Ready. Try: python cli.py synth --oracle-noise 0.1 --output runs/demo")
        return 0
    print(f"⚠️  {passed}/{total} checks passed")
    print("\n⚠️  Please fix the issues above first")
    return 1


if __name__ == '__main__':
    sys.exit(main())
