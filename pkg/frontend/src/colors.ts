/** Fixed legend colors for the four canonical landform classes. */
const LEGEND: Record<string, string> = {
  peak: "blue",
  peaks: "blue",
  saddle: "green",
  saddles: "green",
  cliff: "red",
  cliffs: "red",
  river: "yellow",
  rivers: "yellow",
};

const FALLBACK = ["purple", "orange", "brown", "teal", "magenta", "olive"];

export function classColor(cls: string): string {
  const fixed = LEGEND[cls.toLowerCase()];
  if (fixed !== undefined) return fixed;
  // deterministic fallback so replays and reloads keep the same color
  let h = 0;
  for (const ch of cls) h = (h * 31 + (ch.codePointAt(0) ?? 0)) >>> 0;
  return FALLBACK[h % FALLBACK.length] as string;
}
