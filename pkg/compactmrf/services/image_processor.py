from PIL import Image, UnidentifiedImageError
from pathlib import Path
from typing import Optional, Union
import logging

import numpy as np

logger = logging.getLogger(__name__)

PathLike = Union[str, Path]

class ImageProcessor:
    """Imágenes PGM en escala de grises de 8 bits para el experimento de denoising."""

    MAXVAL = 255
    MIN_DIMENSION = 1

    @staticmethod
    def _read_maxval(path: Path) -> int:
        """maxval del encabezado PGM (P2 o P5); Pillow no lo expone."""
        with open(path, "rb") as f:
            head = f.read(512)
        tokens = []
        for line in head.split(b"\n"):
            line = line.split(b"#", 1)[0]
            tokens.extend(line.split())
            if len(tokens) >= 4:
                break
        if len(tokens) < 4 or tokens[0] not in (b"P2", b"P5"):
            raise ValueError(f"{path} no es un PGM P2/P5")
        return int(tokens[3])

    @staticmethod
    def load_pgm(path: PathLike) -> np.ndarray:
        """
        Lee un PGM (P2 ASCII o P5 binario) como arreglo uint8 (alto, ancho).
        Sólo se aceptan imágenes de 8 bits con maxval 255.
        """
        path = Path(path)
        try:
            maxval = ImageProcessor._read_maxval(path)
            if maxval != ImageProcessor.MAXVAL:
                raise ValueError(f"maxval {maxval} no soportado (se espera {ImageProcessor.MAXVAL})")
            img = Image.open(path)
            img.load()
        except (OSError, UnidentifiedImageError) as e:
            logger.error(f"Error leyendo imagen {path}: {e}")
            raise ValueError(f"No se pudo leer la imagen {path}")

        if img.mode != "L":
            raise ValueError(f"{path}: se esperaba escala de grises de 8 bits, modo {img.mode}")
        if min(img.size) < ImageProcessor.MIN_DIMENSION:
            raise ValueError(f"{path}: imagen vacía {img.size}")
        logger.info(f"Imagen {path}: {img.width}x{img.height}")
        return np.asarray(img, dtype=np.uint8)

    @staticmethod
    def save_pgm(image: np.ndarray, path: PathLike) -> None:
        """Escribe P5 con maxval 255."""
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        data = np.clip(np.rint(np.asarray(image, dtype=float)), 0, ImageProcessor.MAXVAL).astype(np.uint8)
        Image.fromarray(data, mode="L").save(path, format="PPM")

    @staticmethod
    def corrupt(image: np.ndarray, seed: int = 0, outlier_rate: float = 0.05, sigma: float = 10.0) -> np.ndarray:
        """
        Modelo de ruido del experimento: con probabilidad `outlier_rate` el píxel
        se reemplaza por un valor uniforme en [0, 255]; si no, se suma N(0, sigma).
        """
        if not 0 <= outlier_rate <= 1:
            raise ValueError(f"outlier_rate fuera de [0, 1]: {outlier_rate}")
        rng = np.random.default_rng(seed)
        clean = np.asarray(image, dtype=float)
        noisy = clean + rng.normal(0.0, sigma, size=clean.shape)
        outliers = rng.random(clean.shape) < outlier_rate
        noisy[outliers] = rng.uniform(0, ImageProcessor.MAXVAL, size=int(outliers.sum()))
        return np.clip(np.rint(noisy), 0, ImageProcessor.MAXVAL).astype(np.uint8)

    @staticmethod
    def psnr(image: np.ndarray, reference: np.ndarray, peak: float = 255.0) -> float:
        a = np.asarray(image, dtype=float)
        b = np.asarray(reference, dtype=float)
        if a.shape != b.shape:
            raise ValueError(f"dimensiones distintas: {a.shape} vs {b.shape}")
        mse = float(np.mean((a - b) ** 2))
        if mse == 0:
            return float("inf")
        return 10.0 * np.log10(peak ** 2 / mse)

    @staticmethod
    def label_intensities(labels: int) -> np.ndarray:
        """Etiqueta i -> intensidad i·255/(L-1)."""
        if labels < 2:
            raise ValueError(f"se necesitan al menos 2 etiquetas, no {labels}")
        return np.arange(labels) * (ImageProcessor.MAXVAL / (labels - 1))

    @staticmethod
    def to_labels(image: np.ndarray, labels: int) -> np.ndarray:
        """Etiqueta más cercana a cada intensidad (aplanado row-major)."""
        step = ImageProcessor.MAXVAL / (labels - 1)
        idx = np.rint(np.asarray(image, dtype=float) / step).astype(np.int64)
        return np.clip(idx, 0, labels - 1).ravel()

    @staticmethod
    def from_labels(labels: np.ndarray, shape, n_labels: int, maxval: Optional[int] = None) -> np.ndarray:
        values = ImageProcessor.label_intensities(n_labels)[np.asarray(labels, dtype=np.int64)]
        return np.clip(np.rint(values), 0, maxval or ImageProcessor.MAXVAL).astype(np.uint8).reshape(shape)
