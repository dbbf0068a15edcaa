"""Script to verify project setup"""

import sys
import os
from pathlib import Path


def check_file_exists(filepath: str, description: str) -> bool:
    """Check if a file exists"""
    exists = os.path.exists(filepath)
    status = "✓" if exists else "✗"
    print(f"{status} {description}: {filepath}")
    return exists


def check_env_var(var_name: str) -> bool:
    """Report an optional environment variable; unset variables fall back to defaults"""
    from dotenv import load_dotenv

    load_dotenv()
    value = os.getenv(var_name)
    is_set = value is not None and value != ""
    status = "✓" if is_set else "·"
    print(f"{status} {var_name}: {'Set' if is_set else 'Not set (default)'}")
    return is_set


def check_import(module_name: str) -> bool:
    """Check if a Python module can be imported"""
    try:
        __import__(module_name)
        print(f"✓ {module_name}: Importable")
        return True
    except ImportError as e:
        print(f"✗ {module_name}: {e}")
        return False


def check_config(path: Path) -> bool:
    """Check that an experiment configuration validates"""
    try:
        from src.experiments.config import load_config

        config = load_config(path)
        print(f"✓ {path}: {config.name} (delta={config.delta}, hash {config.config_hash()[:12]})")
        return True
    except Exception as e:
        print(f"✗ {path}: {e}")
        return False


def main():
    """Main verification function"""
    print("=" * 60)
    print("Verificando configuración del proyecto...")
    print("=" * 60)

    all_ok = True

    # Check project structure
    print("\n📁 Estructura del proyecto:")
    all_ok &= check_file_exists("requirements.txt", "requirements.txt")
    all_ok &= check_file_exists("config/config.yaml", "Experimento por defecto")
    all_ok &= check_file_exists("src/experiments/cli.py", "CLI lipschitz-gluing")
    all_ok &= check_file_exists("src/gluing/glued_map.py", "Mapa pegado (centro de masa)")

    # Optional environment variables
    print("\n🔐 Variables de entorno (opcionales):")
    for var in ("LIPSCHITZ_OUTPUT_DIR", "LIPSCHITZ_N_JOBS", "LIPSCHITZ_MLFLOW_TRACKING_URI"):
        check_env_var(var)

    # Check Python dependencies
    print("\n📦 Dependencias Python:")
    critical_modules = ["numpy", "scipy", "pandas", "pydantic", "pydantic_settings", "joblib", "mlflow", "yaml"]

    for module in critical_modules:
        all_ok &= check_import(module)

    # Check experiment configurations
    print("\n🧪 Configuraciones de experimentos:")
    for path in [Path("config/config.yaml"), *sorted(Path("config/experiments").glob("*.yaml"))]:
        all_ok &= check_config(path)

    # Check output directory
    print("\n💾 Directorio de resultados:")
    results_dir = Path(os.getenv("LIPSCHITZ_OUTPUT_DIR") or "results")
    results_dir.mkdir(parents=True, exist_ok=True)
    print(f"✓ {results_dir}/: {results_dir.exists()}")

    # Summary
    print("\n" + "=" * 60)
    if all_ok:
        print("✅ Configuración completa! El proyecto está listo para usar.")
        print("\nPróximos pasos:")
        print("  1. lipschitz-gluing verify-lemmas")
        print("  2. lipschitz-gluing report --config config/config.yaml")
        print("  3. lipschitz-gluing sweep --config config/experiments/perturbed_torus_sweep.yaml")
    else:
        print("⚠️  Hay algunos problemas. Revisa los errores arriba.")
        print("\nSugerencias:")
        print("  - Ejecuta: pip install -r requirements.txt")
        print("  - Ejecuta: pip install -e .")
        print("  - Revisa los YAML en config/")
    print("=" * 60)

    return 0 if all_ok else 1


if __name__ == "__main__":
    sys.exit(main())
