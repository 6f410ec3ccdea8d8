import functools
import logging
import sys

logger = logging.getLogger(__name__)

EXIT_ERROR = 2

def handles_errors(func):
    """
    Envuelve un comando: errores de entrada (ValueError) y de ejecución
    (RuntimeError) se registran y terminan con código 2.
    """
    @functools.wraps(func)
    def wrapper(args) -> int:
        try:
            return func(args) or 0
        except ValueError as e:
            logger.error(f"Entrada inválida: {e}")
        except RuntimeError as e:
            logger.error(f"Error interno: {e}")
        return EXIT_ERROR
    return wrapper

def emit(line: str) -> None:
    """Salida para el usuario (stdout), separada del log."""
    sys.stdout.write(line + "\n")
