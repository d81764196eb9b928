/** Client-side pre-annotation validation mirroring the server's rules.
 *
 * The submit button is enabled only while this returns no errors, so a
 * payload that fails server validation indicates a bug, not a user error.
 */

import type { PreAnnotation, Schema } from "./types.js";

export function validatePreAnnotation(pre: PreAnnotation, schema?: Schema): string[] {
  const errors: string[] = [];
  const seen = new Set<string>();
  for (const label of pre.labels) {
    if (seen.has(label.id)) {
      errors.push(`duplicate label id ${label.id}`);
    }
    seen.add(label.id);
    if (!(0 <= label.start && label.start < label.end && label.end <= pre.content.length)) {
      errors.push(`label ${label.id}: offsets (${label.start}, ${label.end}) out of range`);
    }
    if (schema && !schema.entities.includes(label.type)) {
      errors.push(`label ${label.id}: type ${label.type} not in schema`);
    }
  }
  for (const conn of pre.connections) {
    if (!seen.has(conn.head)) {
      errors.push(`connection head references unknown label ${conn.head}`);
    }
    if (!seen.has(conn.tail)) {
      errors.push(`connection tail references unknown label ${conn.tail}`);
    }
    if (conn.head === conn.tail) {
      errors.push(`connection head equals tail (${conn.head})`);
    }
    if (schema && !schema.relations.includes(conn.type)) {
      errors.push(`connection type ${conn.type} not in schema`);
    }
  }
  return errors;
}

/** Labels whose offsets cannot be drawn over the content. */
export function outOfRangeLabels(pre: PreAnnotation): string[] {
  return pre.labels
    .filter((l) => !(0 <= l.start && l.start < l.end && l.end <= pre.content.length))
    .map((l) => l.id);
}
