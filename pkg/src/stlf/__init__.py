"""Source/target determination and link formation for transfer learning across devices."""

__version__ = "0.1.0"
