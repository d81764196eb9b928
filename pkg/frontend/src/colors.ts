/** Schema-driven colors: each entity type gets a stable palette slot. */

const PALETTE = [
  "#ffd166", "#8ecae6", "#b5e48c", "#f4a0c0", "#c8b6ff",
  "#ffb4a2", "#99e2b4", "#f9c74f", "#a2d2ff", "#e9c46a",
  "#d8f3dc", "#f4978e", "#bde0fe", "#e0aaff", "#caf0f8",
  "#fec89a", "#d0f4de", "#fcd5ce", "#cde7be", "#e2ece9",
];

export function colorForType(type: string, entityTypes: string[]): string {
  const index = entityTypes.indexOf(type);
  if (index >= 0) return PALETTE[index % PALETTE.length]!;
  // stable fallback for out-of-schema types shown in warnings
  let hash = 0;
  for (const ch of type) hash = (hash * 31 + ch.charCodeAt(0)) >>> 0;
  return PALETTE[hash % PALETTE.length]!;
}
